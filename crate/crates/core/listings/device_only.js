jcond {
   	deviceOnly: sys.type == "device";
}
jasync function {deviceOnly} deviceOnly {
   	// Code to execute
}
